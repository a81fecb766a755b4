#pragma once

#include "snaklat/error.hpp"
#include "snaklat/lattice.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace snaklat {

enum class Family { CubicQuintic, QuadraticCubic, CubicLogistic, Polynomial };
enum class Endpoint { Pitchfork, Fold, Transcritical };

inline std::string to_string(Family f) {
    switch (f) {
    case Family::CubicQuintic: return "cubic_quintic";
    case Family::QuadraticCubic: return "quadratic_cubic";
    case Family::CubicLogistic: return "cubic_logistic";
    case Family::Polynomial: return "polynomial";
    }
    return "polynomial";
}

inline Family family_from_string(const std::string& s) {
    if (s == "cubic_quintic") return Family::CubicQuintic;
    if (s == "quadratic_cubic") return Family::QuadraticCubic;
    if (s == "cubic_logistic") return Family::CubicLogistic;
    if (s == "polynomial") return Family::Polynomial;
    throw Error(ErrorKind::Config, "unknown model.family '" + s + "'");
}

inline std::string to_string(Endpoint e) {
    switch (e) {
    case Endpoint::Pitchfork: return "pitchfork";
    case Endpoint::Fold: return "fold";
    case Endpoint::Transcritical: return "transcritical";
    }
    return "fold";
}

/// One monomial c * mu^mu_power * u^u_power.
struct Term {
    int mu_power = 0;
    int u_power = 0;
    double coeff = 0.0;
};

/// Bistable reaction term f(u, mu) stored as a polynomial, with closed-form roots for
/// the built-in families and bracketed bisection otherwise.
class Nonlinearity {
public:
    static Nonlinearity builtin(Family family) {
        switch (family) {
        case Family::CubicQuintic:
            return Nonlinearity(family, {{1, 1, -1.0}, {0, 3, 2.0}, {0, 5, -1.0}}, Endpoint::Pitchfork, Endpoint::Fold);
        case Family::QuadraticCubic:
            return Nonlinearity(family, {{1, 1, -1.0}, {0, 2, 2.0}, {0, 3, -1.0}}, Endpoint::Transcritical,
                                Endpoint::Fold);
        case Family::CubicLogistic:
            // u (u - mu) (1 - u)
            return Nonlinearity(family, {{0, 2, 1.0}, {0, 3, -1.0}, {1, 1, -1.0}, {1, 2, 1.0}},
                                Endpoint::Transcritical, Endpoint::Transcritical);
        case Family::Polynomial: break;
        }
        throw Error(ErrorKind::Config, "polynomial family needs coefficients");
    }

    /// Custom family; the window is (mu_lo, mu_hi) and roots are searched on (0, u_max].
    static Nonlinearity polynomial(std::vector<Term> terms, double mu_lo = 0.0, double mu_hi = 1.0,
                                   double u_max = 4.0) {
        if (terms.empty()) throw Error(ErrorKind::Config, "model.coefficients is empty");
        for (const Term& t : terms)
            if (t.mu_power < 0 || t.u_power < 0 || !std::isfinite(t.coeff))
                throw Error(ErrorKind::Config, "invalid polynomial term");
        if (!(mu_lo < mu_hi)) throw Error(ErrorKind::Config, "empty bistable window");
        Nonlinearity nl(Family::Polynomial, std::move(terms), Endpoint::Fold, Endpoint::Fold);
        nl.mu_lo_ = mu_lo;
        nl.mu_hi_ = mu_hi;
        nl.u_max_ = u_max;
        nl.lo_end_ = nl.classify_endpoint(mu_lo);
        nl.hi_end_ = nl.classify_endpoint(mu_hi);
        return nl;
    }

    Family family() const { return family_; }
    const std::vector<Term>& terms() const { return terms_; }
    std::pair<double, double> window() const { return {mu_lo_, mu_hi_}; }
    Endpoint lower_endpoint() const { return lo_end_; }
    Endpoint upper_endpoint() const { return hi_end_; }

    /// d^a/du^a d^b/dmu^b f at (u, mu).
    double derivative(double u, double mu, int a, int b) const {
        double acc = 0.0;
        for (const Term& t : terms_) {
            if (t.u_power < a || t.mu_power < b) continue;
            double c = t.coeff;
            for (int i = 0; i < a; ++i) c *= t.u_power - i;
            for (int i = 0; i < b; ++i) c *= t.mu_power - i;
            acc += c * ipow(u, t.u_power - a) * ipow(mu, t.mu_power - b);
        }
        return acc;
    }

    double f(double u, double mu) const { return derivative(u, mu, 0, 0); }
    double f_u(double u, double mu) const { return derivative(u, mu, 1, 0); }
    double f_uu(double u, double mu) const { return derivative(u, mu, 2, 0); }
    double f_uuu(double u, double mu) const { return derivative(u, mu, 3, 0); }
    double f_mu(double u, double mu) const { return derivative(u, mu, 0, 1); }
    double f_umu(double u, double mu) const { return derivative(u, mu, 1, 1); }

    double u_minus(double mu) const { return roots(mu).first; }
    double u_plus(double mu) const { return roots(mu).second; }

    /// (u_-, u_+) on the closed window.
    std::pair<double, double> roots(double mu) const {
        check_window(mu);
        const double r = std::sqrt(std::max(0.0, 1.0 - mu));
        switch (family_) {
        case Family::CubicQuintic: return {std::sqrt(std::max(0.0, 1.0 - r)), std::sqrt(1.0 + r)};
        case Family::QuadraticCubic: return {1.0 - r, 1.0 + r};
        case Family::CubicLogistic: return {mu, 1.0};
        case Family::Polynomial: return numeric_roots(mu);
        }
        return {0.0, 0.0};
    }

    /// Which roots collide at a window end: u_- with 0 (pitchfork when f_uu(0) vanishes,
    /// transcritical otherwise) or u_- with u_+ (fold when f_mu is nonzero there).
    Endpoint classify_endpoint(double mu_end) const {
        if (zero_collision(mu_end))
            return std::abs(f_uu(0.0, mu_end)) < 1e-9 ? Endpoint::Pitchfork : Endpoint::Transcritical;
        return std::abs(f_mu(merge_point(mu_end), mu_end)) > 1e-8 ? Endpoint::Fold : Endpoint::Transcritical;
    }

private:
    Nonlinearity(Family family, std::vector<Term> terms, Endpoint lo, Endpoint hi)
        : family_(family), terms_(std::move(terms)), lo_end_(lo), hi_end_(hi) {}

    static double ipow(double x, int k) {
        double r = 1.0;
        for (int i = 0; i < k; ++i) r *= x;
        return r;
    }

    void check_window(double mu) const {
        const double slack = 1e-12;
        if (!(mu >= mu_lo_ - slack && mu <= mu_hi_ + slack))
            throw Error(ErrorKind::Config, "mu=" + std::to_string(mu) + " outside the bistable window");
    }

    bool zero_collision(double mu) const {
        return std::abs(f(0.0, mu)) < 1e-12 && std::abs(f_u(0.0, mu)) < 1e-9;
    }

    /// Positive double root of f(., mu): the zero of f_u where |f| is smallest.
    double merge_point(double mu) const {
        constexpr int cells = 4000;
        double best = u_max_, best_f = std::abs(f(u_max_, mu));
        double a = u_max_ / cells, ga = f_u(a, mu);
        for (int i = 2; i <= cells; ++i) {
            const double b = u_max_ * i / cells, gb = f_u(b, mu);
            if ((ga < 0.0) != (gb < 0.0)) {
                double lo = a, hi = b, glo = ga;
                for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
                    const double mid = 0.5 * (lo + hi), gm = f_u(mid, mu);
                    if ((gm < 0.0) == (glo < 0.0)) { lo = mid; glo = gm; } else { hi = mid; }
                }
                const double c = 0.5 * (lo + hi);
                if (std::abs(f(c, mu)) < best_f) { best = c; best_f = std::abs(f(c, mu)); }
            }
            a = b;
            ga = gb;
        }
        return best;
    }

    std::pair<double, double> numeric_roots(double mu) const {
        const double edge = 1e-6 * (mu_hi_ - mu_lo_);
        if (mu > mu_hi_ - edge || mu < mu_lo_ + edge) {
            if (zero_collision(mu)) {
                const auto inner = numeric_roots(std::clamp(mu, mu_lo_ + 2 * edge, mu_hi_ - 2 * edge));
                return {0.0, inner.second};
            }
            const double U = merge_point(mu);
            return {U, U};
        }
        constexpr int cells = 4000;
        std::vector<double> found;
        std::vector<int> slope;
        double a = u_max_ / cells * 1e-3, fa = f(a, mu);
        for (int i = 1; i <= cells; ++i) {
            const double b = u_max_ * i / cells, fb = f(b, mu);
            if (fb == 0.0 && fa != 0.0) {
                found.push_back(b);
                slope.push_back(fa < 0.0 ? 1 : -1);
            } else if (fa != 0.0 && (fa < 0.0) != (fb < 0.0)) {
                double lo = a, hi = b, flo = fa;
                for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
                    const double mid = 0.5 * (lo + hi), fm = f(mid, mu);
                    if ((fm < 0.0) == (flo < 0.0)) { lo = mid; flo = fm; } else { hi = mid; }
                }
                found.push_back(0.5 * (lo + hi));
                slope.push_back(fa < 0.0 ? 1 : -1);
            }
            a = b;
            fa = fb;
        }
        for (std::size_t i = 0; i + 1 < found.size(); ++i)
            if (slope[i] > 0 && slope[i + 1] < 0) return {found[i], found[i + 1]};
        // u_- has merged with 0: only the descending root u_+ remains.
        for (std::size_t i = 0; i < found.size(); ++i)
            if (slope[i] < 0) return {0.0, found[i]};
        throw Error(ErrorKind::Config, "polynomial has no bistable roots at mu=" + std::to_string(mu));
    }

    Family family_;
    std::vector<Term> terms_;
    Endpoint lo_end_;
    Endpoint hi_end_;
    double mu_lo_ = 0.0;
    double mu_hi_ = 1.0;
    double u_max_ = 4.0;
};

inline Nonlinearity builtin_nonlinearity(Family family) { return Nonlinearity::builtin(family); }

enum class Variant { UBar, VBar };

inline std::string to_string(Variant v) { return v == Variant::UBar ? "ubar" : "vbar"; }

struct PatternId {
    int N = 1;
    int M = 1;
    Variant variant = Variant::UBar;
    Symmetry symmetry = Symmetry::OffSite;
    friend bool operator==(const PatternId&, const PatternId&) = default;
};

inline std::string to_string(const PatternId& id) {
    return to_string(id.variant) + "(" + std::to_string(id.N) + "," + std::to_string(id.M) + ")";
}

inline void validate(const PatternId& id) {
    if (id.N < 1 || id.M < 1 || id.M > id.N)
        throw Error(ErrorKind::Config, "pattern index requires 1 <= M <= N, got " + to_string(id));
}

/// Decoupled (d = 0) pattern on the wedge: a filled triangle of u_+ cells with the
/// partial column n = N; the VBar variant puts u_- at (N, M).
inline Field anti_continuum_pattern(const GridSpec& wedge, const PatternId& id, double mu, const Nonlinearity& nl) {
    validate(id);
    if (wedge.kind() != GridKind::Wedge) throw Error(ErrorKind::Config, "patterns live on the wedge");
    if (id.N > wedge.nd()) throw Error(ErrorKind::Config, "pattern exceeds domain");
    const auto [um, up] = nl.roots(mu);
    Field u(wedge);
    for (std::size_t i = 0; i < wedge.size(); ++i) {
        const Site p = wedge.site(i);
        double v = 0.0;
        if (p.n < id.N) v = up;
        else if (p.n == id.N && p.m < id.M) v = up;
        else if (p.n == id.N && p.m == id.M) v = id.variant == Variant::UBar ? up : um;
        u.values[static_cast<Eigen::Index>(i)] = v;
    }
    return u;
}

struct GammaSegment {
    PatternId id;
    double mu_from = 0.0;
    double mu_to = 0.0;
};

struct GammaPath {
    std::vector<GammaSegment> segments;
    /// Junction points (UBar pattern, mu) near which persistence is not established.
    std::vector<std::pair<PatternId, double>> exceptional;
};

/// Membership in the exceptional junction set; VBar ids are mapped to the UBar pattern
/// they coincide with at the junction.
inline bool in_exceptional_set(PatternId id, double mu) {
    const bool at0 = mu == 0.0, at1 = mu == 1.0;
    if (!at0 && !at1) return false;
    if (id.variant == Variant::VBar) {
        if (at1) id.variant = Variant::UBar;
        else if (id.M > 1) id = {id.N, id.M - 1, Variant::UBar, id.symmetry};
        else if (id.N > 1) id = {id.N - 1, id.N - 1, Variant::UBar, id.symmetry};
        else return false;  // vbar(1,1) at 0 is the trivial state
    }
    if (at0) return id.M == id.N && id.N >= 3;
    return id.M >= 2 && id.M <= id.N - 2;
}

/// Pattern joined to `id` at the window end `mu` (0 or 1).
inline std::optional<PatternId> junction_partner(const PatternId& id, double mu) {
    if (mu == 1.0) return PatternId{id.N, id.M, id.variant == Variant::UBar ? Variant::VBar : Variant::UBar, id.symmetry};
    if (mu != 0.0) return std::nullopt;
    if (id.variant == Variant::UBar) {
        if (id.M < id.N) return PatternId{id.N, id.M + 1, Variant::VBar, id.symmetry};
        return PatternId{id.N + 1, 1, Variant::VBar, id.symmetry};
    }
    if (id.M > 1) return PatternId{id.N, id.M - 1, Variant::UBar, id.symmetry};
    if (id.N > 1) return PatternId{id.N - 1, id.N - 1, Variant::UBar, id.symmetry};
    return std::nullopt;
}

/// Traversal of the skeleton from the trivial state to ubar(N*,N*) at mu = 0.
inline GammaPath gamma_path(int n_star, Symmetry sym = Symmetry::OffSite) {
    if (n_star < 2) throw Error(ErrorKind::Config, "gamma_path needs N* >= 2");
    GammaPath path;
    for (int N = 1; N <= n_star; ++N)
        for (int M = 1; M <= N; ++M) {
            path.segments.push_back({{N, M, Variant::VBar, sym}, 0.0, 1.0});
            path.segments.push_back({{N, M, Variant::UBar, sym}, 1.0, 0.0});
        }
    for (int N = 3; N <= n_star; ++N) path.exceptional.push_back({{N, N, Variant::UBar, sym}, 0.0});
    for (int N = 1; N <= n_star; ++N)
        for (int M = 2; M <= N - 2; ++M) path.exceptional.push_back({{N, M, Variant::UBar, sym}, 1.0});
    return path;
}

}  // namespace snaklat
