#pragma once

#include "snaklat/error.hpp"
#include "snaklat/solver.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace snaklat {

struct Trajectory {
    std::vector<double> times;
    std::vector<Vector> states;
    /// Sup-norm distance to the reference state at each sample.
    std::vector<double> deviation;
    std::size_t steps = 0;
    std::size_t rejected = 0;
};

struct DynamicsConfig {
    double atol = 1e-10;
    double rtol = 1e-8;
    double h_init = 1e-3;
    double h_min = 1e-12;
    double h_max = 1.0;
    /// Samples are stored every `stride` accepted steps (and at t_end).
    std::size_t stride = 1;
    /// Fixed-step implicit Euler instead of the adaptive explicit pair.
    bool implicit = false;
    double dt = 0.05;
};

namespace detail {

struct Sampler {
    Trajectory& tr;
    const Vector* reference;
    void operator()(double t, const Vector& u) {
        tr.times.push_back(t);
        tr.states.push_back(u);
        tr.deviation.push_back(reference ? (u - *reference).lpNorm<Eigen::Infinity>() : 0.0);
    }
};

}  // namespace detail

/// Integrates du/dt = d Lap(u) + f(u, mu) from u0 to t_end with the Dormand-Prince 5(4)
/// pair (or implicit Euler when cfg.implicit). `reference` feeds the deviation column.
inline Trajectory integrate(const SteadyState& p, const Vector& u0, double mu, double d, double t_end,
                            const DynamicsConfig& cfg = {}, const Vector* reference = nullptr) {
    if (!(t_end > 0.0)) throw Error(ErrorKind::Config, "t_end must be positive");
    if (cfg.stride == 0) throw Error(ErrorKind::Config, "sample stride must be positive");
    if (reference && reference->size() != u0.size()) throw Error(ErrorKind::Config, "reference does not match the grid");
    Trajectory tr;
    detail::Sampler sample{tr, reference};
    Vector u = u0;
    double t = 0.0;
    sample(t, u);

    if (cfg.implicit) {
        if (!(cfg.dt > 0.0)) throw Error(ErrorKind::Config, "implicit step must be positive");
        while (t < t_end) {
            const double h = std::min(cfg.dt, t_end - t);
            Vector v = u;
            bool ok = false;
            for (int it = 0; it < 30; ++it) {
                const Vector G = v - u - h * p.residual(v, mu, d);
                if (G.lpNorm<Eigen::Infinity>() <= 1e-13 * (1.0 + v.lpNorm<Eigen::Infinity>())) {
                    ok = true;
                    break;
                }
                SparseMatrix A = -h * p.jacobian(v, mu, d);
                for (Eigen::Index i = 0; i < A.rows(); ++i) A.coeffRef(i, i) += 1.0;
                v -= sparse_lu_solve(A, G, ErrorKind::NoConvergence);
            }
            if (!ok || !v.allFinite()) throw Error(ErrorKind::NoConvergence, "implicit Euler step did not converge");
            u = std::move(v);
            t += h;
            ++tr.steps;
            if (tr.steps % cfg.stride == 0 || t >= t_end) sample(t, u);
        }
        return tr;
    }

    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                            a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                            e6 = 22.0 / 525, e7 = -1.0 / 40;

    auto rhs = [&](const Vector& v) { return p.residual(v, mu, d); };
    Vector k1 = rhs(u);
    double h = std::min(cfg.h_init, t_end);
    while (t < t_end) {
        if (t + h > t_end) h = t_end - t;
        if (h < cfg.h_min) throw Error(ErrorKind::StepUnderflow, "step size underflow at t=" + std::to_string(t));
        const Vector k2 = rhs(u + h * a21 * k1);
        const Vector k3 = rhs(u + h * (a31 * k1 + a32 * k2));
        const Vector k4 = rhs(u + h * (a41 * k1 + a42 * k2 + a43 * k3));
        const Vector k5 = rhs(u + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
        const Vector k6 = rhs(u + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
        Vector un = u + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        const Vector k7 = rhs(un);
        const Vector err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
        double en = 0.0;
        for (Eigen::Index i = 0; i < u.size(); ++i) {
            const double sc = cfg.atol + cfg.rtol * std::max(std::abs(u[i]), std::abs(un[i]));
            en = std::max(en, std::abs(err[i]) / sc);
        }
        if (!std::isfinite(en)) en = 1e10;
        if (en <= 1.0) {
            t += h;
            u = std::move(un);
            k1 = k7;
            ++tr.steps;
            if (tr.steps % cfg.stride == 0 || t >= t_end) sample(t, u);
        } else {
            ++tr.rejected;
        }
        const double factor = en == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 5.0);
        h = std::min(h * factor, cfg.h_max);
    }
    return tr;
}

/// Least-squares slope of log(deviation) against t over samples with deviation in
/// [lo, hi]: the exponential growth (or decay) rate.
inline double growth_rate(const Trajectory& tr, double lo, double hi) {
    double n = 0, st = 0, sy = 0, stt = 0, sty = 0;
    for (std::size_t i = 0; i < tr.times.size(); ++i) {
        const double dv = tr.deviation[i];
        if (!(dv >= lo && dv <= hi)) continue;
        const double t = tr.times[i], y = std::log(dv);
        n += 1;
        st += t;
        sy += y;
        stt += t * t;
        sty += t * y;
    }
    if (n < 3) throw Error(ErrorKind::NoConvergence, "too few samples in the fitting window");
    const double den = n * stt - st * st;
    if (den == 0.0) throw Error(ErrorKind::NoConvergence, "degenerate fitting window");
    return (n * sty - st * sy) / den;
}

}  // namespace snaklat
