#pragma once

#include "snaklat/continuation.hpp"
#include "snaklat/error.hpp"
#include "snaklat/model.hpp"

#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace snaklat {

/// Which endpoint bifurcation a fold is born from, and where the critical cell sits.
enum class Ending {
    PitchforkInterior,
    PitchforkCorner,
    FoldEndingMNearN,
    FoldEndingM1,
    TranscriticalZeroInterior,
    TranscriticalZeroCorner,
    TranscriticalOneMNearN,
    TranscriticalOneM1,
};

inline constexpr std::array<Ending, 8> all_endings{
    Ending::PitchforkInterior,         Ending::PitchforkCorner,         Ending::FoldEndingMNearN,
    Ending::FoldEndingM1,              Ending::TranscriticalZeroInterior, Ending::TranscriticalZeroCorner,
    Ending::TranscriticalOneMNearN,    Ending::TranscriticalOneM1};

inline std::string to_string(Ending e) {
    switch (e) {
    case Ending::PitchforkInterior: return "pitchfork_interior";
    case Ending::PitchforkCorner: return "pitchfork_corner";
    case Ending::FoldEndingMNearN: return "fold_ending_m_near_n";
    case Ending::FoldEndingM1: return "fold_ending_m1";
    case Ending::TranscriticalZeroInterior: return "transcritical_zero_interior";
    case Ending::TranscriticalZeroCorner: return "transcritical_zero_corner";
    case Ending::TranscriticalOneMNearN: return "transcritical_one_m_near_n";
    case Ending::TranscriticalOneM1: return "transcritical_one_m1";
    }
    return "";
}

inline Ending ending_from_string(const std::string& s) {
    for (Ending e : all_endings)
        if (to_string(e) == s) return e;
    throw Error(ErrorKind::Config, "unknown ending '" + s + "'");
}

/// Leading-order fold location: mu = c d^p, or mu = 1 - c d^p for endings at mu = 1.
struct FoldPrediction {
    Ending ending = Ending::PitchforkInterior;
    double exponent = 0.0;
    double coefficient = 0.0;
    bool at_one = false;

    double mu(double d) const {
        const double v = coefficient * std::pow(d, exponent);
        return at_one ? 1.0 - v : v;
    }
};

inline FoldPrediction fold_prediction(Ending e) {
    const double cbrt4 = std::cbrt(4.0);
    switch (e) {
    case Ending::PitchforkInterior: return {e, 2.0 / 3.0, 3.0, false};
    case Ending::PitchforkCorner: return {e, 2.0 / 3.0, 3.0 / cbrt4, false};
    case Ending::FoldEndingMNearN: return {e, 1.0, 2.0, true};
    case Ending::FoldEndingM1: return {e, 1.0, 2.0, true};
    case Ending::TranscriticalZeroInterior: return {e, 0.5, 2.0 * std::sqrt(2.0), false};
    case Ending::TranscriticalZeroCorner: return {e, 0.5, 2.0, false};
    case Ending::TranscriticalOneMNearN: return {e, 0.5, 2.0 * std::sqrt(2.0), true};
    case Ending::TranscriticalOneM1: return {e, 0.5, std::sqrt(2.0), true};
    }
    return {};
}

/// Leading-order prediction, valid for d in (0, d_max].
inline double predict_fold_mu(Ending e, double d, double d_max = 0.01) {
    if (!(d > 0.0) || d > d_max)
        throw Error(ErrorKind::Config, "d = " + std::to_string(d) + " outside the asymptotic range (0, " +
                                           std::to_string(d_max) + "]");
    return fold_prediction(e).mu(d);
}

/// Affine change of (mu, d) that brings a nonlinearity to the normalized expansion the
/// predictions assume: at mu = 0, f = -mu u + u^3 (or + u^2) with u_+(0) = 1; at mu = 1,
/// f(1 + u, 1 + mu) = -mu - u^2 up to the scale of u.
struct NormalForm {
    double mu_factor = 1.0;
    double d_factor = 1.0;
    bool at_one = false;

    double mu_hat(double mu) const { return at_one ? 1.0 - mu_factor * (1.0 - mu) : mu_factor * mu; }
    double mu_raw(double mu_hat) const { return at_one ? 1.0 - (1.0 - mu_hat) / mu_factor : mu_hat / mu_factor; }
    double d_hat(double d) const { return d_factor * d; }
    double d_raw(double d_hat) const { return d_hat / d_factor; }
};

inline NormalForm normal_form(const Nonlinearity& nl, bool at_one) {
    const auto [lo, hi] = nl.window();
    NormalForm nf;
    nf.at_one = at_one;
    if (!at_one) {
        const double a = -nl.f_umu(0.0, lo);
        const double U = nl.u_plus(lo);
        const Endpoint kind = nl.lower_endpoint();
        double kappa = 1.0;
        if (kind == Endpoint::Pitchfork) kappa = nl.f_uuu(0.0, lo) / 6.0 * U * U;
        else if (kind == Endpoint::Transcritical) kappa = nl.f_uu(0.0, lo) / 2.0 * U;
        if (!(kappa > 0.0) || !(a > 0.0)) throw Error(ErrorKind::Config, "lower endpoint has no normal form");
        nf.mu_factor = a / kappa;
        nf.d_factor = 1.0 / kappa;
    } else {
        const double U = nl.u_plus(hi);
        const double alpha = -nl.f_mu(U, hi);
        if (!(alpha > 0.0)) throw Error(ErrorKind::Config, "upper endpoint has no normal form");
        nf.mu_factor = 1.0;
        nf.d_factor = 1.0 / alpha;
    }
    return nf;
}

// ---------------------------------------------------------------------------
// Reduced algebraic systems at nu = 0.

enum class ReducedId { PitchInterior, PitchCornerOffsite, PitchCornerOnsite, SaddleNearN, SaddleM1, TransInterior };

inline constexpr std::array<ReducedId, 6> all_reduced{ReducedId::PitchInterior, ReducedId::PitchCornerOffsite,
                                                     ReducedId::PitchCornerOnsite, ReducedId::SaddleNearN,
                                                     ReducedId::SaddleM1, ReducedId::TransInterior};

inline std::string to_string(ReducedId id) {
    switch (id) {
    case ReducedId::PitchInterior: return "pitch_interior";
    case ReducedId::PitchCornerOffsite: return "pitch_corner_offsite";
    case ReducedId::PitchCornerOnsite: return "pitch_corner_onsite";
    case ReducedId::SaddleNearN: return "saddle_near_n";
    case ReducedId::SaddleM1: return "saddle_m1";
    case ReducedId::TransInterior: return "trans_interior";
    }
    return "";
}

inline ReducedId reduced_from_string(const std::string& s) {
    for (ReducedId id : all_reduced)
        if (to_string(id) == s) return id;
    throw Error(ErrorKind::UnknownId, "unknown reduced system '" + s + "'");
}

/// A point of a reduced system: the rescaled cell values and the rescaled coupling.
/// For the corner and M = 1 systems the first value is the critical cell and the second
/// its competing neighbour; the coupling is the blow-up correction d0.
struct ReducedPoint {
    std::vector<double> u;
    double d = 0.0;
};

inline std::pair<double, double> reduced_range(ReducedId id) {
    switch (id) {
    case ReducedId::PitchInterior: return {0.0, 1.0};
    case ReducedId::SaddleNearN: return {-1.0, 1.0};
    case ReducedId::PitchCornerOffsite:
    case ReducedId::PitchCornerOnsite: {
        const double e = 2.0 * std::pow(3.0, 0.25) / 9.0;
        return {-e, e};
    }
    case ReducedId::SaddleM1: return {-0.5 * std::sqrt(2.0), 0.5 * std::sqrt(2.0)};
    case ReducedId::TransInterior: return {0.0, 1.0};
    }
    return {0.0, 0.0};
}

/// Residuals of the reduced equations at a point.
inline std::vector<double> reduced_residual(ReducedId id, const ReducedPoint& p) {
    const double s3 = std::sqrt(3.0);
    switch (id) {
    case ReducedId::PitchInterior: {
        const double u = p.u.at(0);
        return {2.0 * p.d - u + u * u * u};
    }
    case ReducedId::SaddleNearN: {
        const double u = p.u.at(0);
        return {-2.0 * p.d + 1.0 - u * u};
    }
    case ReducedId::PitchCornerOffsite:
    case ReducedId::PitchCornerOnsite: {
        const double v1 = p.u.at(0), v2 = p.u.at(1);
        return {p.d + s3 * v1 * v1 - 4.0 / 27.0, p.d + s3 * v2 * v2 - 2.0 / 9.0};
    }
    case ReducedId::SaddleM1: {
        const double v1 = p.u.at(0), v2 = p.u.at(1);
        return {0.5 - 2.0 * p.d - v1 * v1, std::sqrt(2.0) - 2.0 * p.d - v2 * v2};
    }
    case ReducedId::TransInterior: {
        const double u = p.u.at(0);
        return {2.0 * p.d - u + u * u};
    }
    }
    throw Error(ErrorKind::UnknownId, "unknown reduced system");
}

/// Analytic branch of a reduced system at parameter s (the critical cell value).
/// The competing neighbour of the two-cell systems stays on its lower branch.
inline ReducedPoint reduced_branch(ReducedId id, double s) {
    const auto [lo, hi] = reduced_range(id);
    if (s < lo - 1e-15 || s > hi + 1e-15)
        throw Error(ErrorKind::Config, "reduced branch parameter outside [" + std::to_string(lo) + ", " +
                                           std::to_string(hi) + "]");
    const double s3 = std::sqrt(3.0);
    switch (id) {
    case ReducedId::PitchInterior: return {{s}, 0.5 * s * (1.0 - s * s)};
    case ReducedId::SaddleNearN: return {{s}, 0.5 * (1.0 - s * s)};
    case ReducedId::PitchCornerOffsite:
    case ReducedId::PitchCornerOnsite: {
        const double d0 = 4.0 / 27.0 - s3 * s * s;
        return {{s, -std::sqrt((2.0 / 9.0 - d0) / s3)}, d0};
    }
    case ReducedId::SaddleM1: {
        const double d0 = 0.5 * (0.5 - s * s);
        return {{s, std::sqrt(std::sqrt(2.0) - 2.0 * d0)}, d0};
    }
    case ReducedId::TransInterior: return {{s}, 0.5 * (s - s * s)};
    }
    throw Error(ErrorKind::UnknownId, "unknown reduced system");
}

/// Fold of the reduced branch: (s_fold, d_fold).
inline std::pair<double, double> reduced_fold(ReducedId id) {
    switch (id) {
    case ReducedId::PitchInterior: return {1.0 / std::sqrt(3.0), 1.0 / (3.0 * std::sqrt(3.0))};
    case ReducedId::SaddleNearN: return {0.0, 0.5};
    case ReducedId::PitchCornerOffsite:
    case ReducedId::PitchCornerOnsite: return {0.0, 4.0 / 27.0};
    case ReducedId::SaddleM1: return {0.0, 0.25};
    case ReducedId::TransInterior: return {0.5, 0.125};
    }
    throw Error(ErrorKind::UnknownId, "unknown reduced system");
}

/// Leading coefficient of the fold in mu implied by a reduced fold value through the
/// ending's scaling: mu = nu^2, d = nu^3 d~ (pitchfork); mu = nu, d = nu^2 d~
/// (transcritical); 1 - mu = nu^2, d = nu^2 d~ (fold ending).
inline double scaled_fold_coefficient(Ending e, double d_fold) {
    switch (e) {
    case Ending::PitchforkInterior:
    case Ending::PitchforkCorner: return std::pow(d_fold, -2.0 / 3.0);
    case Ending::TranscriticalZeroInterior:
    case Ending::TranscriticalZeroCorner: return std::pow(d_fold, -0.5);
    case Ending::FoldEndingMNearN:
    case Ending::FoldEndingM1: return 1.0 / d_fold;
    default: throw Error(ErrorKind::Config, "no reduced scaling for " + to_string(e));
    }
}

// ---------------------------------------------------------------------------
// Cross-validation against full continuation.

/// Computes the fold location mu(d) for one raw coupling d.
using FoldFinder = std::function<double(double)>;

struct FitSample {
    double d_hat = 0.0;
    double mu_hat = 0.0;
    double deviation = 0.0;
    double predicted = 0.0;
};

struct FitReport {
    Ending ending = Ending::PitchforkInterior;
    double exponent = 0.0;
    double coefficient = 0.0;
    double exponent_se = 0.0;
    double coefficient_se = 0.0;
    NormalForm normal;
    std::vector<FitSample> per_d;
};

/// Least-squares fit of log(deviation) = log(c) + p log(d) over d in normal-form
/// coordinates; deviation is mu (endings at 0) or 1 - mu (endings at 1).
inline FitReport verify_asymptotics(Ending e, const std::vector<double>& d_hat_list, const FoldFinder& fold_mu,
                                    const NormalForm& nf) {
    if (d_hat_list.size() < 3) throw Error(ErrorKind::Config, "verify_asymptotics needs at least three d values");
    const FoldPrediction pred = fold_prediction(e);
    FitReport rep;
    rep.ending = e;
    rep.normal = nf;
    std::vector<double> x, y;
    for (double dh : d_hat_list) {
        const double mu = fold_mu(nf.d_raw(dh));
        FitSample s;
        s.d_hat = dh;
        s.mu_hat = nf.mu_hat(mu);
        s.deviation = pred.at_one ? 1.0 - s.mu_hat : s.mu_hat;
        s.predicted = pred.mu(dh);
        if (!(s.deviation > 0.0)) throw Error(ErrorKind::NoConvergence, "fold on the wrong side of the endpoint");
        rep.per_d.push_back(s);
        x.push_back(std::log(dh));
        y.push_back(std::log(s.deviation));
    }
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) { mx += x[i] / n; my += y[i] / n; }
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    const double slope = sxy / sxx;
    const double intercept = my - slope * mx;
    double rss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - intercept - slope * x[i];
        rss += r * r;
    }
    const double sigma2 = n > 2.0 ? rss / (n - 2.0) : 0.0;
    rep.exponent = slope;
    rep.coefficient = std::exp(intercept);
    rep.exponent_se = std::sqrt(sigma2 / sxx);
    rep.coefficient_se = rep.coefficient * std::sqrt(sigma2 * (1.0 / n + mx * mx / sxx));
    return rep;
}

/// Fold finder for a pattern family: the anti-continuum pattern at mu_start is continued
/// in d from 0, then in mu (direction +1 or -1) to its first fold, which is refined.
inline FoldFinder pattern_fold_finder(const GridSpec& wedge, const Nonlinearity& nl, PatternId id, double mu_start,
                                      int direction, StepConfig cfg = {}) {
    return [=](double d) {
        SteadyState prob(wedge, nl);
        Vector u = anti_continuum_pattern(wedge, id, mu_start, nl).values;
        u = natural_continuation(prob, u, mu_start, 0.0, Parameter::D, d, 10);
        StepConfig c = cfg;
        c.direction = direction;
        const auto [lo, hi] = nl.window();
        c.p_min = lo - 0.05;
        c.p_max = hi + 0.05;
        c.stop = [](const Branch& b) {
            for (const Event& ev : b.events)
                if (ev.kind == EventKind::Fold) return true;
            return false;
        };
        const Branch br = continue_branch(prob, make_point(prob, u, mu_start, d), Parameter::Mu, c);
        const std::vector<FoldPoint> folds = detect_and_refine_folds(prob, br);
        if (folds.empty()) throw Error(ErrorKind::NoConvergence, "no fold found (" + br.end_reason + ")");
        if (!folds.front().refined) throw Error(ErrorKind::RefinementFailed, "fold refinement failed");
        return folds.front().mu;
    };
}

}  // namespace snaklat
