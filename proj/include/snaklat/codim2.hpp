#pragma once

#include "snaklat/continuation.hpp"
#include "snaklat/error.hpp"
#include "snaklat/model.hpp"
#include "snaklat/solver.hpp"
#include "snaklat/spectral.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace snaklat {

struct CuspPoint {
    /// Wedge state.
    Vector u;
    double mu = 0.0;
    double d = 0.0;
    /// Unit null vectors on the full square: phi1 symmetric, phi2 in `sector`.
    Vector phi1;
    Vector phi2;
    SectorKind sector = SectorKind::Sign1;
    PatternId label;
    double residual_norm = 0.0;
    double null_residual1 = 0.0;
    double null_residual2 = 0.0;
    double orthogonality = 0.0;
    /// Eigenvalues of J in (-nullity_tol, nullity_tol), counted by inertia.
    int nullity = 0;
    /// Sup norm of the augmented residual at the returned point.
    double system_residual = 0.0;
    int iterations = 0;
    bool converged = false;
};

struct CuspOptions {
    double tol = 1e-9;
    double nullity_tol = 1e-7;
    int newton_iter = 30;
    int lm_iter = 60;
    /// Non-trivial sectors tried for the second null vector, in order.
    std::vector<SectorKind> sectors{SectorKind::Sign3, SectorKind::Sign2, SectorKind::Sign1, SectorKind::TwoDimAxis,
                                    SectorKind::TwoDimDiagonal};
    std::ostream* log = nullptr;
};

namespace detail {

inline Eigen::MatrixXd dense(const SparseMatrix& A) { return Eigen::MatrixXd(A); }

/// Unit eigenvector of a symmetric dense matrix for the eigenvalue closest to zero.
inline std::pair<double, Vector> nearest_zero_mode(const Eigen::MatrixXd& A) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (A + A.transpose()));
    Eigen::Index k = 0;
    es.eigenvalues().cwiseAbs().minCoeff(&k);
    return {es.eigenvalues()[k], es.eigenvectors().col(k)};
}

/// Square cusp system in (a, p, q, mu, d): u = B_A a, phi1 = B_A p, phi2 = B_S q with
/// B_A^T F = 0, B_A^T J phi1 = 0, B_S^T J phi2 = 0, |p|^2 = 1, |q|^2 = 1.
class CuspSystem {
public:
    CuspSystem(const SteadyState& full, SectorKind sector)
        : full_(full), BA_(sector_basis(full.grid(), SectorKind::Trivial)), BS_(sector_basis(full.grid(), sector)) {
        nA_ = BA_.cols();
        nS_ = BS_.cols();
    }

    Eigen::Index size() const { return 2 * nA_ + nS_ + 2; }
    Eigen::Index n_trivial() const { return nA_; }
    Eigen::Index n_sector() const { return nS_; }
    const SparseMatrix& trivial_basis() const { return BA_; }
    const SparseMatrix& sector_basis_matrix() const { return BS_; }

    Vector pack(const Vector& U, double mu, double d, const Vector& p, const Vector& q) const {
        Vector x(size());
        x << BA_.transpose() * U, p, q, mu, d;
        return x;
    }

    Vector state(const Vector& x) const { return BA_ * x.head(nA_); }
    Vector phi1(const Vector& x) const { return BA_ * x.segment(nA_, nA_); }
    Vector phi2(const Vector& x) const { return BS_ * x.segment(2 * nA_, nS_); }
    double mu(const Vector& x) const { return x[2 * nA_ + nS_]; }
    double d(const Vector& x) const { return x[2 * nA_ + nS_ + 1]; }

    Vector residual(const Vector& x) const {
        const Vector U = state(x), P1 = phi1(x), P2 = phi2(x);
        const SparseMatrix J = full_.jacobian(U, mu(x), d(x));
        Vector R(size());
        const Vector p = x.segment(nA_, nA_), q = x.segment(2 * nA_, nS_);
        R << BA_.transpose() * full_.residual(U, mu(x), d(x)), BA_.transpose() * (J * P1), BS_.transpose() * (J * P2),
            p.squaredNorm() - 1.0, q.squaredNorm() - 1.0;
        return R;
    }

    Eigen::MatrixXd jacobian(const Vector& x) const {
        const double m = mu(x), dd = d(x);
        const Vector U = state(x), P1 = phi1(x), P2 = phi2(x);
        const SparseMatrix J = full_.jacobian(U, m, dd);
        const Vector fuu = full_.pointwise(U, m, 2, 0), fum = full_.pointwise(U, m, 1, 1);
        const SparseMatrix& L = full_.laplacian();
        const Eigen::Index n = size(), cm = 2 * nA_ + nS_, cd = cm + 1;
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
        const Eigen::MatrixXd JA = dense(SparseMatrix(BA_.transpose() * J * BA_));
        const Eigen::MatrixXd JS = dense(SparseMatrix(BS_.transpose() * J * BS_));
        A.block(0, 0, nA_, nA_) = JA;
        A.block(0, cm, nA_, 1) = BA_.transpose() * full_.d_mu(U, m);
        A.block(0, cd, nA_, 1) = BA_.transpose() * (L * U);
        const SparseMatrix D1 = SparseMatrix(fuu.cwiseProduct(P1).asDiagonal());
        A.block(nA_, 0, nA_, nA_) = dense(SparseMatrix(BA_.transpose() * D1 * BA_));
        A.block(nA_, nA_, nA_, nA_) = JA;
        A.block(nA_, cm, nA_, 1) = BA_.transpose() * fum.cwiseProduct(P1);
        A.block(nA_, cd, nA_, 1) = BA_.transpose() * (L * P1);
        const SparseMatrix D2 = SparseMatrix(fuu.cwiseProduct(P2).asDiagonal());
        A.block(2 * nA_, 0, nS_, nA_) = dense(SparseMatrix(BS_.transpose() * D2 * BA_));
        A.block(2 * nA_, 2 * nA_, nS_, nS_) = JS;
        A.block(2 * nA_, cm, nS_, 1) = BS_.transpose() * fum.cwiseProduct(P2);
        A.block(2 * nA_, cd, nS_, 1) = BS_.transpose() * (L * P2);
        A.block(cm, nA_, 1, nA_) = 2.0 * x.segment(nA_, nA_).transpose();
        A.block(cd, 2 * nA_, 1, nS_) = 2.0 * x.segment(2 * nA_, nS_).transpose();
        return A;
    }

private:
    const SteadyState& full_;
    SparseMatrix BA_, BS_;
    Eigen::Index nA_ = 0, nS_ = 0;
};

/// Damped Newton, then Levenberg-Marquardt with rejection on residual increase.
inline std::pair<Vector, int> solve_square(const CuspSystem& sys, Vector x, const CuspOptions& opt) {
    auto norm = [](const Vector& r) { return r.allFinite() ? r.lpNorm<Eigen::Infinity>() : HUGE_VAL; };
    Vector R = sys.residual(x);
    double r = norm(R);
    int it = 0;
    for (; it < opt.newton_iter && r > opt.tol; ++it) {
        const Eigen::MatrixXd A = sys.jacobian(x);
        const Vector dx = A.partialPivLu().solve(R);
        bool accepted = false;
        for (double lam = 1.0; lam >= 1.0 / 64.0; lam *= 0.5) {
            const Vector xt = x - lam * dx;
            const Vector Rt = sys.residual(xt);
            if (norm(Rt) < r) {
                x = xt;
                R = Rt;
                r = norm(Rt);
                accepted = true;
                break;
            }
        }
        if (opt.log) *opt.log << "cusp newton " << it << " residual " << r << '\n';
        if (!accepted) break;
    }
    double lambda = 1e-6;
    for (int k = 0; k < opt.lm_iter && r > opt.tol; ++k, ++it) {
        const Eigen::MatrixXd A = sys.jacobian(x);
        const Eigen::MatrixXd N = A.transpose() * A;
        const Vector g = A.transpose() * R;
        bool accepted = false;
        for (int tries = 0; tries < 12; ++tries) {
            Eigen::MatrixXd M = N;
            M.diagonal() += lambda * (N.diagonal().array() + 1e-12).matrix();
            const Vector dx = M.ldlt().solve(g);
            const Vector xt = x - dx;
            const Vector Rt = sys.residual(xt);
            if (norm(Rt) < r) {
                x = xt;
                R = Rt;
                r = norm(Rt);
                lambda = std::max(lambda / 3.0, 1e-12);
                accepted = true;
                break;
            }
            lambda *= 4.0;
        }
        if (opt.log && k % 10 == 0) *opt.log << "cusp lm " << k << " residual " << r << " lambda " << lambda << '\n';
        if (!accepted) break;
    }
    return {x, it};
}

inline CuspPoint solve_cusp_in_sector(const SteadyState& prob, const Vector& u0, double mu0, double d0,
                                      SectorKind sector, const CuspOptions& opt) {
    const SteadyState full = full_problem(prob);
    const CuspSystem sys(full, sector);
    const Vector U0 = to_full(prob, u0);
    const SparseMatrix J0 = full.jacobian(U0, mu0, d0);
    const auto& BA = sys.trivial_basis();
    const auto& BS = sys.sector_basis_matrix();
    const Vector p0 = nearest_zero_mode(dense(SparseMatrix(BA.transpose() * J0 * BA))).second;
    const Vector q0 = nearest_zero_mode(dense(SparseMatrix(BS.transpose() * J0 * BS))).second;
    auto [x, iters] = solve_square(sys, sys.pack(U0, mu0, d0, p0, q0), opt);

    CuspPoint cp;
    cp.sector = sector;
    cp.iterations = iters;
    cp.mu = sys.mu(x);
    cp.d = sys.d(x);
    const Vector U = sys.state(x);
    cp.u = prob.grid().kind() == GridKind::FullSquare ? U : fold(Field(full.grid(), U), prob.grid().symmetry()).values;
    cp.phi1 = sys.phi1(x).normalized();
    cp.phi2 = sys.phi2(x).normalized();
    cp.system_residual = sys.residual(x).lpNorm<Eigen::Infinity>();
    const SparseMatrix J = full.jacobian(U, cp.mu, cp.d);
    cp.residual_norm = full.residual(U, cp.mu, cp.d).lpNorm<Eigen::Infinity>();
    cp.null_residual1 = (J * cp.phi1).lpNorm<Eigen::Infinity>();
    cp.null_residual2 = (J * cp.phi2).lpNorm<Eigen::Infinity>();
    cp.orthogonality = std::abs(cp.phi1.dot(cp.phi2));
    cp.converged = std::isfinite(cp.system_residual) && cp.system_residual <= opt.tol;
    try {
        const Inertia above = inertia(shifted(J, opt.nullity_tol));
        const Inertia below = inertia(shifted(J, -opt.nullity_tol));
        cp.nullity = below.positive - above.positive;
    } catch (const Error&) {
        cp.nullity = -1;
    }
    return cp;
}

}  // namespace detail

/// Newton on the symmetry-restricted cusp system from a point near a fold of a
/// symmetric branch. Sectors in `opt.sectors` are tried in turn for the second null
/// vector; the first convergent one with nullity two is returned.
inline CuspPoint find_cusp(const SteadyState& prob, const Vector& u0, double mu0, double d0,
                           const CuspOptions& opt = {}) {
    if (prob.grid().kind() == GridKind::Wedge && prob.grid().symmetry() == Symmetry::None)
        throw Error(ErrorKind::Config, "cusp search needs a symmetric grid");
    std::optional<CuspPoint> best, wrong;
    for (SectorKind s : opt.sectors) {
        CuspPoint cp = detail::solve_cusp_in_sector(prob, u0, mu0, d0, s, opt);
        if (opt.log)
            *opt.log << "cusp sector " << to_string(s) << " residual " << cp.system_residual << " nullity " << cp.nullity
                     << '\n';
        if (cp.converged && cp.nullity == 2) return cp;
        if (cp.converged) {
            if (!wrong) wrong = std::move(cp);
            continue;
        }
        if (!best || cp.system_residual < best->system_residual) best = std::move(cp);
    }
    if (wrong)
        throw Error(ErrorKind::WrongNullity, "cusp candidate in sector " + to_string(wrong->sector) + " has nullity " +
                                                 std::to_string(wrong->nullity));
    throw Error(ErrorKind::NoConvergence,
                "cusp system did not converge (best residual " + std::to_string(best ? best->system_residual : NAN) + ")");
}

/// Closest approach of the two leading symmetric modes along the rightmost fold of
/// ubar(N,1) tracked in d: the isola fold and the primary fold meet here.
struct Switchback {
    Vector u;
    double mu = 0.0;
    double d = 0.0;
    /// Distance from zero of the second symmetric eigenvalue at the fold.
    double gap = 0.0;
    /// Non-trivial sectors ordered by how close their leading eigenvalue is to the gap.
    std::vector<SectorKind> sectors;
};

struct SwitchbackOptions {
    double mu_start = 0.8;
    double d_start = 0.03;
    double d_step = 0.0025;
    double d_max = 0.3;
    double d_tol = 1e-6;
};

namespace detail {

/// Second eigenvalue closest to zero of the symmetric sector at a fold.
inline double second_trivial_eigenvalue(const SteadyState& full, const SparseMatrix& BA, const SteadyState& prob,
                                        const FoldPoint& f) {
    const SparseMatrix J = full.jacobian(to_full(prob, f.u), f.mu, f.d);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense(sector_operator(BA, J)), Eigen::EigenvaluesOnly);
    Vector ev = es.eigenvalues();
    std::sort(ev.data(), ev.data() + ev.size(), [](double a, double b) { return std::abs(a) < std::abs(b); });
    return ev.size() > 1 ? ev[1] : HUGE_VAL;
}

}  // namespace detail

inline Switchback locate_switchback(const SteadyState& prob, int N, const SwitchbackOptions& opt = {}) {
    const GridSpec& wedge = prob.grid();
    const Nonlinearity& nl = prob.model();
    const PatternId id{N, 1, Variant::UBar, wedge.symmetry()};
    Vector u = anti_continuum_pattern(wedge, id, opt.mu_start, nl).values;
    u = natural_continuation(prob, u, opt.mu_start, 0.0, Parameter::D, opt.d_start, 30);
    StepConfig cfg;
    cfg.h_max = 0.01;
    cfg.direction = 1;
    cfg.p_max = nl.window().second + 0.05;
    cfg.stop = [](const Branch& b) {
        for (const Event& e : b.events)
            if (e.kind == EventKind::Fold) return true;
        return false;
    };
    const Branch br = continue_branch(prob, make_point(prob, u, opt.mu_start, opt.d_start), Parameter::Mu, cfg);
    std::vector<FoldPoint> folds = detect_and_refine_folds(prob, br);
    if (folds.empty() || !folds.front().refined)
        throw Error(ErrorKind::NoConvergence, "no refined fold for ubar(" + std::to_string(N) + ",1)");

    const SteadyState full = full_problem(prob);
    const SparseMatrix BA = sector_basis(full.grid(), SectorKind::Trivial);
    auto second = [&](const FoldPoint& f) { return std::abs(detail::second_trivial_eigenvalue(full, BA, prob, f)); };

    // March until the distance of the second mode from zero stops shrinking. Fold
    // refinement breaks down right at a crossing, which then bounds the bracket.
    std::vector<FoldPoint> track{folds.front()};
    std::vector<double> g{second(track.back())};
    double h = opt.d_step;
    bool blocked = false;
    for (;;) {
        const FoldPoint& last = track.back();
        if (last.d + h > opt.d_max + 1e-12)
            throw Error(ErrorKind::NoConvergence, "no switchback along the fold of ubar(" + std::to_string(N) +
                                                      ",1) up to d=" + std::to_string(opt.d_max));
        FoldPoint next;
        try {
            next = refine_fold(prob, last.u, last.mu, last.d + h, Parameter::Mu, last.phi);
        } catch (const Error&) {
            h *= 0.5;
            if (h < opt.d_tol) {
                blocked = true;
                break;
            }
            continue;
        }
        track.push_back(std::move(next));
        g.push_back(second(track.back()));
        const std::size_t k = g.size() - 1;
        if (k >= 2 && g[k] > g[k - 1] && g[k - 1] < g[k - 2]) break;
    }
    const std::size_t k = g.size() - 1;
    const std::size_t ia = blocked ? k : k - 1;
    const FoldPoint anchor = track[ia];
    double lo = track[ia > 0 ? ia - 1 : 0].d, hi = blocked ? anchor.d + 2.0 * h : track[k].d;

    // Golden section for the minimum of |lambda_2|; failed refinements count as crossings.
    FoldPoint best = anchor;
    double best_g = g[ia];
    auto eval = [&](double d) {
        try {
            FoldPoint f = refine_fold(prob, anchor.u, anchor.mu, d, Parameter::Mu, anchor.phi);
            const double v = second(f);
            if (v < best_g) {
                best_g = v;
                best = std::move(f);
            }
            return v;
        } catch (const Error&) {
            return -1.0;
        }
    };
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = hi - r * (hi - lo), b = lo + r * (hi - lo);
    double ga = eval(a), gb = eval(b);
    while (hi - lo > opt.d_tol) {
        if (ga < gb) {
            hi = b;
            b = a;
            gb = ga;
            a = hi - r * (hi - lo);
            ga = eval(a);
        } else {
            lo = a;
            a = b;
            ga = gb;
            b = lo + r * (hi - lo);
            gb = eval(b);
        }
    }
    eval(0.5 * (lo + hi));
    const FoldPoint& f = best;
    Switchback sb;
    sb.u = f.u;
    sb.mu = f.mu;
    sb.d = f.d;
    sb.gap = best_g;
    const SparseMatrix J = full.jacobian(to_full(prob, f.u), f.mu, f.d);
    std::vector<std::pair<double, SectorKind>> order;
    for (SectorKind s : all_sectors) {
        if (s == SectorKind::Trivial) continue;
        const double lam = detail::nearest_zero_mode(detail::dense(sector_operator(sector_basis(full.grid(), s), J))).first;
        order.emplace_back(std::abs(std::abs(lam) - sb.gap), s);
    }
    std::sort(order.begin(), order.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    for (const auto& o : order) sb.sectors.push_back(o.second);
    return sb;
}

struct GeometricFit {
    double mu_inf = 0.0;
    double d_inf = 0.0;
    double rho = 0.0;
    double c_mu = 0.0;
    double c_d = 0.0;
    /// Root-mean-square residual of the fit over both coordinates.
    double rms = 0.0;
};

/// Least squares for x_N = x_inf + C rho^N in both coordinates with a shared rho.
inline GeometricFit geometric_fit(const std::vector<int>& Ns, const std::vector<double>& mus,
                                  const std::vector<double>& ds) {
    if (Ns.size() < 3) throw Error(ErrorKind::NoConvergence, "geometric fit needs at least three converged points");
    const int n0 = Ns.front();
    auto solve = [&](double rho, GeometricFit& out) {
        double rss = 0.0;
        for (int coord = 0; coord < 2; ++coord) {
            const std::vector<double>& y = coord == 0 ? mus : ds;
            Eigen::MatrixXd A(static_cast<Eigen::Index>(Ns.size()), 2);
            Vector b(static_cast<Eigen::Index>(Ns.size()));
            for (std::size_t i = 0; i < Ns.size(); ++i) {
                A(static_cast<Eigen::Index>(i), 0) = 1.0;
                A(static_cast<Eigen::Index>(i), 1) = std::pow(rho, Ns[i] - n0);
                b[static_cast<Eigen::Index>(i)] = y[i];
            }
            const Vector c = A.colPivHouseholderQr().solve(b);
            rss += (A * c - b).squaredNorm();
            const double scale = std::pow(rho, -n0);
            if (coord == 0) { out.mu_inf = c[0]; out.c_mu = c[1] * scale; }
            else { out.d_inf = c[0]; out.c_d = c[1] * scale; }
        }
        out.rho = rho;
        out.rms = std::sqrt(rss / (2.0 * static_cast<double>(Ns.size())));
        return rss;
    };
    GeometricFit best;
    double best_rss = HUGE_VAL;
    double best_rho = 0.5;
    for (int k = 1; k < 1000; ++k) {
        GeometricFit f;
        const double rss = solve(k / 1000.0, f);
        if (rss < best_rss) { best_rss = rss; best_rho = k / 1000.0; best = f; }
    }
    double lo = std::max(1e-4, best_rho - 1e-3), hi = std::min(1.0 - 1e-4, best_rho + 1e-3);
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    for (int it = 0; it < 60; ++it) {
        const double a = hi - g * (hi - lo), b = lo + g * (hi - lo);
        GeometricFit fa, fb;
        if (solve(a, fa) < solve(b, fb)) hi = b;
        else lo = a;
    }
    GeometricFit f;
    if (solve(0.5 * (lo + hi), f) < best_rss) best = f;
    return best;
}

struct CuspRow {
    int N = 0;
    double mu = 0.0;
    double d = 0.0;
    double gap = 0.0;
    /// Eigenvalues of J within the nullity tolerance at the extended-system solution.
    int nullity = 0;
    /// The extended system reached its tolerance.
    bool converged = false;
    /// A switchback was located; its coordinates enter the fit.
    bool located = false;
    SectorKind sector = SectorKind::Sign1;
    double residual = 0.0;
    std::string message;
};

struct CuspSequence {
    std::vector<CuspRow> rows;
    std::optional<GeometricFit> fit;
};

/// Per N of ubar(N,1) on a wedge of size nd: the switchback on the rightmost fold, then
/// the extended system started there. The geometric extrapolation runs over the located
/// switchbacks. Failures are kept as rows.
inline CuspSequence cusp_sequence(const Nonlinearity& nl, int nd, Symmetry sym, int n_first, int n_last,
                                  const CuspOptions& opt = {}, const SwitchbackOptions& sb_opt = {},
                                  std::ostream* log = nullptr) {
    if (n_first < 4 || n_last > 16 || n_first > n_last)
        throw Error(ErrorKind::Config, "cusp N range must lie in [4, 16]");
    if (n_last >= nd) throw Error(ErrorKind::Config, "pattern exceeds domain");
    auto run = [&, sym](int N) {
        CuspRow row;
        row.N = N;
        try {
            const SteadyState prob(GridSpec::wedge(nd, sym), nl);
            const Switchback sb = locate_switchback(prob, N, sb_opt);
            row.mu = sb.mu;
            row.d = sb.d;
            row.gap = sb.gap;
            row.located = true;
            CuspOptions o = opt;
            o.log = nullptr;
            o.sectors = {sb.sectors.front()};
            const CuspPoint cp = detail::solve_cusp_in_sector(prob, sb.u, sb.mu, sb.d, o.sectors.front(), o);
            row.sector = cp.sector;
            row.residual = cp.system_residual;
            row.nullity = cp.nullity;
            row.converged = cp.converged && cp.nullity == 2;
            if (row.converged) {
                row.mu = cp.mu;
                row.d = cp.d;
            }
        } catch (const Error& e) {
            row.message = e.what();
        }
        if (log)
            *log << "N=" << N << " mu=" << row.mu << " d=" << row.d << " gap=" << row.gap << " residual=" << row.residual
                 << " nullity=" << row.nullity << (row.message.empty() ? "" : " " + row.message) << std::endl;
        return row;
    };
    std::vector<std::future<CuspRow>> jobs;
    for (int N = n_first; N <= n_last; ++N) jobs.push_back(std::async(std::launch::async, run, N));
    CuspSequence seq;
    std::vector<int> Ns;
    std::vector<double> mus, ds;
    for (auto& j : jobs) {
        CuspRow row = j.get();
        if (row.located) {
            Ns.push_back(row.N);
            mus.push_back(row.mu);
            ds.push_back(row.d);
        }
        seq.rows.push_back(std::move(row));
    }
    if (Ns.size() >= 3) seq.fit = geometric_fit(Ns, mus, ds);
    return seq;
}

}  // namespace snaklat
