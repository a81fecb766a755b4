#pragma once

#include "snaklat/branch.hpp"
#include "snaklat/error.hpp"
#include "snaklat/solver.hpp"
#include "snaklat/spectral.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace snaklat {

enum class Predictor { Secant, Tangent };

struct StepConfig {
    double h_init = 1e-3;
    double h_min = 1e-7;
    double h_max = 0.05;
    std::size_t max_points = 2000;
    double p_min = -std::numeric_limits<double>::infinity();
    double p_max = std::numeric_limits<double>::infinity();
    /// Sign of the first parameter step when the start point carries no tangent.
    int direction = 1;
    double natural_step = 1e-4;
    Predictor predictor = Predictor::Secant;
    bool detect_closure = false;
    bool tag_stability = false;
    int max_corrector = 10;
    double tol = 1e-10;
    /// Smallest accepted cosine between predictor, chord and the tangents at both ends.
    double min_alignment = 0.9;
    /// Corrector safeguards against branch jumping: largest Newton contraction ratio and
    /// largest distance from the predicted point relative to the step.
    double max_contraction = 0.5;
    double max_displacement = 0.5;
    /// Called after each accepted point; returning true ends the run.
    std::function<bool(const Branch&)> stop;
};

namespace detail {

inline void split(Parameter par, double p, double other, double& mu, double& d) {
    if (par == Parameter::Mu) { mu = p; d = other; }
    else { mu = other; d = p; }
}

inline Vector parameter_derivative(const SteadyState& prob, const Vector& u, double mu, Parameter par) {
    return par == Parameter::Mu ? prob.d_mu(u, mu) : prob.d_d(u);
}

inline Vector pack(const Vector& u, double p) {
    Vector x(u.size() + 1);
    x << u, p;
    return x;
}

}  // namespace detail

/// l2 norm of the full-square field behind a state of `prob`.
inline double unfolded_norm(const SteadyState& prob, const Vector& u) {
    return std::sqrt(prob.weights().dot(u.cwiseProduct(u)));
}

inline BranchPoint make_point(const SteadyState& prob, Vector u, double mu, double d) {
    BranchPoint bp;
    bp.norm = unfolded_norm(prob, u);
    bp.u = std::move(u);
    bp.mu = mu;
    bp.d = d;
    return bp;
}

/// Natural-parameter sweep from the current value of `par` to `target` in equal steps.
inline Vector natural_continuation(const SteadyState& prob, Vector u, double mu, double d, Parameter par,
                                   double target, int steps, const NewtonOptions& opt = {}) {
    const double from = par == Parameter::Mu ? mu : d;
    for (int k = 1; k <= steps; ++k) {
        const double p = from + (target - from) * k / steps;
        double m, dd;
        detail::split(par, p, par == Parameter::Mu ? d : mu, m, dd);
        try {
            u = newton_solve(prob, std::move(u), m, dd, opt).u;
        } catch (const Error& e) {
            throw Error(e.kind(), "natural continuation failed at " + to_string(par) + "=" + std::to_string(p) + ": " +
                                      e.what());
        }
    }
    return u;
}

/// Unit tangent of the solution curve from [J F_p; t_prev^T] t = [0; 1].
inline Vector curve_tangent(const SteadyState& prob, const Vector& u, double mu, double d, Parameter par,
                            const Vector& t_prev) {
    const Eigen::Index n = u.size();
    const SparseMatrix J = prob.jacobian(u, mu, d);
    Eigen::MatrixXd B = detail::parameter_derivative(prob, u, mu, par);
    Eigen::MatrixXd C = t_prev.head(n);
    Eigen::MatrixXd D(1, 1);
    D(0, 0) = t_prev[n];
    Vector rhs = Vector::Zero(n + 1);
    rhs[n] = 1.0;
    Vector t = bordered_solve(J, B, C, D, rhs);
    t.normalize();
    if (t.dot(t_prev) < 0.0) t = -t;
    return t;
}

namespace detail {

struct Corrected {
    Vector x;
    int iterations = 0;
};

// Newton on {F(u, p) = 0, t . (x - x_pred) = 0}.
inline std::optional<Corrected> correct(const SteadyState& prob, const Vector& x_pred, const Vector& t, Parameter par,
                                        double other, double h, const StepConfig& cfg) {
    const Eigen::Index n = x_pred.size() - 1;
    double last_step = 0.0;
    Vector x = x_pred;
    Eigen::MatrixXd C = t.head(n);
    Eigen::MatrixXd D(1, 1);
    D(0, 0) = t[n];
    for (int it = 0; it <= cfg.max_corrector; ++it) {
        double mu, d;
        split(par, x[n], other, mu, d);
        if (par == Parameter::D && d < 0.0) return std::nullopt;
        const Vector u = x.head(n);
        const Vector F = prob.residual(u, mu, d);
        const double g = t.dot(x - x_pred);
        if (!F.allFinite()) return std::nullopt;
        if (F.lpNorm<Eigen::Infinity>() <= cfg.tol && std::abs(g) <= cfg.tol) return Corrected{x, it};
        if (it == cfg.max_corrector) break;
        Vector rhs(n + 1);
        rhs << F, g;
        Vector dx;
        try {
            dx = bordered_solve(prob.jacobian(u, mu, d), parameter_derivative(prob, u, mu, par), C, D, rhs);
        } catch (const Error&) {
            return std::nullopt;
        }
        // Slow contraction means the predictor sits between branches.
        const double step = dx.norm();
        if (it > 0 && step > cfg.max_contraction * last_step && step > cfg.tol) return std::nullopt;
        last_step = step;
        x -= dx;
        if ((x - x_pred).norm() > cfg.max_displacement * h) return std::nullopt;
    }
    return std::nullopt;
}

}  // namespace detail

/// Inertia counts on the full square for every stored point.
inline void tag_stability(const SteadyState& prob, Branch& branch) {
    const SteadyState full = prob.grid().kind() == GridKind::FullSquare ? prob : full_problem(prob);
    for (BranchPoint& p : branch.points)
        p.unstable_count = unstable_count_full(full, to_full(prob, p.u), p.mu, p.d).n_unstable;
}

/// Secant pseudo-arclength continuation in mu (at fixed d) or in d (at fixed mu).
/// A start point without a tangent gets one from a small natural-parameter step.
/// Corrector failures end the run with an End event rather than an exception.
inline Branch continue_branch(const SteadyState& prob, const BranchPoint& start, Parameter par,
                              const StepConfig& cfg = {}) {
    const Eigen::Index n = static_cast<Eigen::Index>(prob.size());
    if (start.u.size() != n) throw Error(ErrorKind::Config, "start point does not match the grid");
    const double other = par == Parameter::Mu ? start.d : start.mu;
    NewtonOptions nopt;
    nopt.tol = cfg.tol;

    Branch br;
    br.grid = prob.grid();
    br.parameter = par;

    Vector u0 = newton_solve(prob, start.u, start.mu, start.d, nopt).u;
    const double p0 = parameter_value(start, par);
    Vector x = detail::pack(u0, p0);

    Vector t;
    if (start.tangent.size() == n + 1) {
        t = start.tangent.normalized();
    } else {
        double step = cfg.natural_step * (cfg.direction >= 0 ? 1.0 : -1.0);
        for (int attempt = 0;; ++attempt) {
            double mu, d;
            detail::split(par, p0 + step, other, mu, d);
            try {
                const Vector u1 = newton_solve(prob, u0, mu, d, nopt).u;
                t = detail::pack(u1 - u0, step).normalized();
                break;
            } catch (const Error&) {
                if (attempt == 4) throw Error(ErrorKind::CorrectorStalled, "initial natural step failed");
                step *= 0.5;
            }
        }
    }

    {
        BranchPoint bp = make_point(prob, u0, start.mu, start.d);
        bp.tangent = t;
        br.points.push_back(std::move(bp));
        br.events.push_back({0, EventKind::Start});
    }
    const Vector x_start = x;
    const Vector t_start = t;
    double max_dist = 0.0;
    double h = cfg.h_init;

    auto finish = [&](std::string reason) {
        br.end_reason = std::move(reason);
        br.events.push_back({br.points.size() - 1, EventKind::End});
    };

    Vector secant_prev = t;
    while (true) {
        if (br.points.size() >= cfg.max_points) { finish("max points"); break; }
        const Vector& pred_dir = cfg.predictor == Predictor::Tangent ? t : secant_prev;
        std::optional<detail::Corrected> res = detail::correct(prob, x + h * pred_dir, pred_dir, par, other, h, cfg);
        Vector secant, tau;
        double mu = 0.0, d = 0.0;
        if (res) {
            secant = res->x - x;
            const double len = secant.norm();
            detail::split(par, res->x[n], other, mu, d);
            if (len < 0.1 * cfg.h_min) res.reset();
            else {
                secant /= len;
                // The chord must follow the predictor and the curve tangent at its far end;
                // otherwise it has cut across a sharp turn.
                try {
                    tau = curve_tangent(prob, res->x.head(n), mu, d, par, secant);
                } catch (const Error&) {
                    res.reset();
                }
                if (res && (secant.dot(pred_dir) < cfg.min_alignment || tau.dot(secant) < cfg.min_alignment ||
                            tau.dot(t) < cfg.min_alignment))
                    res.reset();
            }
        }
        if (!res) {
            h *= 0.5;
            if (h < cfg.h_min) { finish("corrector stalled"); break; }
            continue;
        }
        x = res->x;
        if (res->iterations <= 3) h = std::min(h * 1.3, cfg.h_max);

        // A sign change in the parameter component of the tangent brackets a fold; the
        // event goes to the bracketing point with the more extreme parameter value.
        if (t[n] * tau[n] < 0.0) {
            const std::size_t k = br.points.size() - 1;
            const double pk = parameter_value(br.points[k], par);
            const bool maximum = t[n] > 0.0;
            const bool last_is_extreme = maximum ? x[n] > pk : x[n] < pk;
            br.events.push_back({last_is_extreme ? k + 1 : k, EventKind::Fold});
        }

        BranchPoint bp = make_point(prob, x.head(n), mu, d);
        bp.tangent = tau;
        br.points.push_back(std::move(bp));
        t = tau;
        secant_prev = secant;

        if (x[n] < cfg.p_min || x[n] > cfg.p_max) { finish("parameter bound"); break; }
        const double dist = (x - x_start).norm();
        max_dist = std::max(max_dist, dist);
        if (cfg.detect_closure && max_dist > 4.0 * cfg.h_max && dist <= 2.0 * std::max(h, cfg.h_init) &&
            tau.dot(t_start) > 0.99) {
            br.closed = true;
            finish("closed");
            break;
        }
        if (cfg.stop && cfg.stop(br)) { finish("stop condition"); break; }
    }
    if (cfg.tag_stability) tag_stability(prob, br);
    return br;
}

/// Newton on {F(u, p) = 0, J phi = 0, <c, phi> = 1} in the unknowns (u, phi, p).
inline FoldPoint refine_fold(const SteadyState& prob, const Vector& u0, double mu0, double d0, Parameter par,
                             const Vector& phi_guess = Vector()) {
    const Eigen::Index n = u0.size();
    const Vector& W = prob.weights();
    auto wnorm = [&](const Vector& v) { return std::sqrt(W.dot(v.cwiseProduct(v))); };
    Vector phi;
    if (phi_guess.size() == n) {
        phi = phi_guess / wnorm(phi_guess);
    } else {
        const SparseMatrix J = prob.jacobian(u0, mu0, d0);
        const double shift = 1e-12 * (1.0 + spectral_scale(prob, u0, mu0, d0));
        Eigen::SparseLU<SparseMatrix> lu;
        const SparseMatrix S = shifted(J, shift);
        lu.analyzePattern(S);
        lu.factorize(S);
        if (lu.info() != Eigen::Success) throw Error(ErrorKind::RefinementFailed, "fold guess factorization failed");
        phi = Vector::Ones(n);
        for (int k = 0; k < 25; ++k) {
            phi = lu.solve(phi);
            if (!phi.allFinite()) throw Error(ErrorKind::RefinementFailed, "inverse iteration diverged");
            phi /= wnorm(phi);
        }
    }
    const Vector c = W.cwiseProduct(phi);
    const double other = par == Parameter::Mu ? d0 : mu0;
    Vector x(2 * n + 1);
    x << u0, phi, (par == Parameter::Mu ? mu0 : d0);

    FoldPoint fp;
    for (int it = 0; it <= 40; ++it) {
        double mu, d;
        detail::split(par, x[2 * n], other, mu, d);
        const Vector u = x.head(n), ph = x.segment(n, n);
        const SparseMatrix J = prob.jacobian(u, mu, d);
        const Vector F = prob.residual(u, mu, d);
        const Vector Jphi = J * ph;
        const double g = c.dot(ph) - 1.0;
        const double fres = F.lpNorm<Eigen::Infinity>();
        const double nres = Jphi.lpNorm<Eigen::Infinity>() / wnorm(ph);
        if (!F.allFinite() || !Jphi.allFinite()) break;
        if ((fres <= 1e-12 && nres <= 1e-11 && std::abs(g) <= 1e-12) ||
            (it == 40 && fres <= 1e-10 && nres <= 1e-8)) {
            fp.u = u;
            fp.mu = mu;
            fp.d = d;
            fp.phi = ph / wnorm(ph);
            fp.refined = true;
            fp.residual_norm = fres;
            fp.null_residual = (J * fp.phi).lpNorm<Eigen::Infinity>();
            return fp;
        }
        if (it == 40) break;
        const Vector Fp = detail::parameter_derivative(prob, u, mu, par);
        const Vector Jp_phi = par == Parameter::Mu ? Vector(prob.pointwise(u, mu, 1, 1).cwiseProduct(ph))
                                                   : Vector(prob.laplacian() * ph);
        const Vector fuu_phi = prob.pointwise(u, mu, 2, 0).cwiseProduct(ph);
        std::vector<Triplet> t;
        t.reserve(static_cast<std::size_t>(2 * J.nonZeros() + 4 * n));
        for (Eigen::Index col = 0; col < J.outerSize(); ++col)
            for (SparseMatrix::InnerIterator e(J, col); e; ++e) {
                t.emplace_back(static_cast<int>(e.row()), static_cast<int>(e.col()), e.value());
                t.emplace_back(static_cast<int>(n + e.row()), static_cast<int>(n + e.col()), e.value());
            }
        const int last = static_cast<int>(2 * n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const int r = static_cast<int>(i);
            t.emplace_back(r, last, Fp[i]);
            t.emplace_back(static_cast<int>(n) + r, r, fuu_phi[i]);
            t.emplace_back(static_cast<int>(n) + r, last, Jp_phi[i]);
            t.emplace_back(last, static_cast<int>(n) + r, c[i]);
        }
        SparseMatrix A(2 * n + 1, 2 * n + 1);
        A.setFromTriplets(t.begin(), t.end());
        Vector rhs(2 * n + 1);
        rhs << F, Jphi, g;
        Vector dx;
        try {
            dx = sparse_lu_solve(A, rhs, ErrorKind::RefinementFailed);
        } catch (const Error&) {
            break;
        }
        x -= dx;
        if (par == Parameter::D && x[2 * n] < 0.0) break;
    }
    throw Error(ErrorKind::RefinementFailed, "fold refinement did not converge");
}

/// Refines every fold event of a branch; failures come back unrefined.
inline std::vector<FoldPoint> detect_and_refine_folds(const SteadyState& prob, const Branch& branch) {
    std::vector<FoldPoint> out;
    if (branch.points.size() < 3) return out;
    for (const Event& e : branch.events) {
        if (e.kind != EventKind::Fold) continue;
        const BranchPoint& bp = branch.points[e.index];
        FoldPoint fp;
        try {
            fp = refine_fold(prob, bp.u, bp.mu, bp.d, branch.parameter);
        } catch (const Error&) {
            fp.u = bp.u;
            fp.mu = bp.mu;
            fp.d = bp.d;
            fp.refined = false;
        }
        fp.branch_index = e.index;
        out.push_back(std::move(fp));
    }
    return out;
}

/// Point on the branch through (U0, mu0) leaving along psi: solves F(U, mu) = 0 with
/// <U - U0, psi> = eps on `prob` (normally a full square without symmetry constraint).
/// The returned tangent points away from U0. eps is halved up to four times on failure.
inline BranchPoint switch_branch(const SteadyState& prob, const Vector& U0, double mu0, double d, const Vector& psi,
                                 double eps) {
    const Eigen::Index n = U0.size();
    if (psi.size() != n) throw Error(ErrorKind::Config, "switch direction does not match the grid");
    if (eps == 0.0) return make_point(prob, U0, mu0, d);
    const Vector dir = psi.normalized();
    Eigen::MatrixXd C = dir;
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(1, 1);

    auto solve_at = [&](const Vector& guess, double mu_guess, double target) -> std::optional<Vector> {
        Vector x = detail::pack(guess, mu_guess);
        for (int it = 0; it < 30; ++it) {
            const Vector U = x.head(n);
            const Vector F = prob.residual(U, x[n], d);
            const double g = dir.dot(U - U0) - target;
            if (!F.allFinite()) return std::nullopt;
            if (F.lpNorm<Eigen::Infinity>() <= 1e-10 && std::abs(g) <= 1e-12) return x;
            Vector rhs(n + 1);
            rhs << F, g;
            try {
                x -= bordered_solve(prob.jacobian(U, x[n], d), prob.d_mu(U, x[n]), C, D, rhs);
            } catch (const Error&) {
                return std::nullopt;
            }
        }
        return std::nullopt;
    };

    for (int attempt = 0; attempt <= 4; ++attempt, eps *= 0.5) {
        auto x1 = solve_at(U0 + eps * dir, mu0, eps);
        if (!x1) continue;
        auto x2 = solve_at(x1->head(n) + eps * dir, (*x1)[n], 2.0 * eps);
        if (!x2) continue;
        BranchPoint bp = make_point(prob, x1->head(n), (*x1)[n], d);
        bp.tangent = (*x2 - *x1).normalized();
        return bp;
    }
    throw Error(ErrorKind::NoConvergence, "branch switching failed for every trial amplitude");
}

/// Continuation with closure detection; `closed` reports whether the loop came back.
inline Branch trace_isola(const SteadyState& prob, const BranchPoint& seed, Parameter par, StepConfig cfg = {}) {
    cfg.detect_closure = true;
    Branch br = continue_branch(prob, seed, par, cfg);
    if (!br.closed && br.end_reason != "closed") br.end_reason += " (no closure)";
    return br;
}

}  // namespace snaklat
